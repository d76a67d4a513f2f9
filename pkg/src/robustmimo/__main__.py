import sys

from robustmimo.cli import main

sys.exit(main())
