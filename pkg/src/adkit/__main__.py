import sys

from adkit.harness.cli import main

sys.exit(main())
