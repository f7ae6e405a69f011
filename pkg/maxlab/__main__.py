import sys

from maxlab.cli import main

sys.exit(main())
