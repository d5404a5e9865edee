"""Entry point for `python -m cvnoncl`."""
import sys

from .cli import main

sys.exit(main())
