import sys

from mbdiag.cli import main

sys.exit(main())
