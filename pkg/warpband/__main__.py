import sys

from warpband.cli import main

sys.exit(main())
