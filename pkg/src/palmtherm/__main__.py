import sys

from palmtherm.cli import main

sys.exit(main())
