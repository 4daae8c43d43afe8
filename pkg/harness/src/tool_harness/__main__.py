import sys

from tool_harness.shim import main

sys.exit(main())
