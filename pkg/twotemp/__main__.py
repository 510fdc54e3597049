"""Allow ``python -m twotemp``."""

from .cli import main

if __name__ == "__main__":
    main()
