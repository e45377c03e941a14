import sys

from revelio.cli import main

sys.exit(main())
