import sys

from binfar.cli import main

sys.exit(main())
