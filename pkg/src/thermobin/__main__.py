from thermobin.cli import main
import sys
sys.exit(main())
