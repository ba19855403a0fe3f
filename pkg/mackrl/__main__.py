import sys

from mackrl.cli import main

sys.exit(main())
