import sys

from threshold_bell.cli import main

sys.exit(main())
