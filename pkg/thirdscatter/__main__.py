from __future__ import annotations

from thirdscatter.cli import main

raise SystemExit(main())
