import sys

from cdsu.cli import main

sys.exit(main())
