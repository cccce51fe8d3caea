import sys

from rrvqa.cli import main

sys.exit(main())
