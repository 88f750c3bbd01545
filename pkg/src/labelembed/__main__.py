import sys

from labelembed.cli import main

sys.exit(main())
