import sys

from ltcinfer.main import main

sys.exit(main())
