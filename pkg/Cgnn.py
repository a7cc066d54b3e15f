# Cgnn.py
# Main entry - command line interface
import sys

from cli_main import main

if __name__ == "__main__":
    sys.exit(main())
