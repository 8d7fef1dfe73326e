import sys

from morphtag.cli import main

sys.exit(main())
