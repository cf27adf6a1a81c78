import sys

from gaittrack.cli import main

sys.exit(main())
