"""Main entry point for LPReach command line"""
import sys

from lpreach.api.cli import main

if __name__ == "__main__":
    sys.exit(main())
