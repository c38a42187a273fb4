import sys

from pegscope.cli import main

sys.exit(main())
