#!/usr/bin/env python3
"""Main entry point for the dmha command"""

import sys

from dmha.application import DmhaApplication


def main(argv=None):
    """Main function to run the command line"""
    app = DmhaApplication()
    return app.run(argv)


if __name__ == '__main__':
    sys.exit(main())
