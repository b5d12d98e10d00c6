import sys

from treemax.controllers.cli import main

if __name__ == "__main__":
    sys.exit(main())
