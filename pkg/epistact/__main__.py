"""Allow ``python -m epistact``."""

from .cli import main

raise SystemExit(main())
