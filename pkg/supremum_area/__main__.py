"""Allow running as `python -m supremum_area`."""

import sys

from supremum_area.cli import main

sys.exit(main())
