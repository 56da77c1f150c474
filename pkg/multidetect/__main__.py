import sys

from multidetect.main import main

sys.exit(main())
