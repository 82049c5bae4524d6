#!/usr/bin/env python3
"""Entry point for the ladderwalk command line."""

from src.cli_main import main

if __name__ == "__main__":
    main()
