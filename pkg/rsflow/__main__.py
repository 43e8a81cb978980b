"""python -m rsflow"""

from rsflow.cli import main

raise SystemExit(main())
