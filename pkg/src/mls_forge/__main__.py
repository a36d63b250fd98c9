import sys

from mls_forge.io.cli import main

sys.exit(main())
