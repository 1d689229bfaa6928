import sys

from treerl.cli import main

sys.exit(main())
