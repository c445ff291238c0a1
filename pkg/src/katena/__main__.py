import sys

from katena.toolkit.cli import main

sys.exit(main())
