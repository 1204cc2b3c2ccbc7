import sys

from llmad.cli import main

sys.exit(main())
