import sys

from nerfdiff.cli import main

sys.exit(main())
