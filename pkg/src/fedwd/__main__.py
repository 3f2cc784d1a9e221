"""Allow `python -m fedwd` as an alias for the fedwd console script."""

import sys

from fedwd.cli import main

sys.exit(main())
