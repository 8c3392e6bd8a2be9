import sys

from pinchopt.cli import main

sys.exit(main())
