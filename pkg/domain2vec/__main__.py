import sys

from domain2vec.cli import main

if __name__ == "__main__":
    sys.exit(main())
