"""Allow running as `python -m tunable_sqp`."""
from .cli import main

main()
