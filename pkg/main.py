import os
import sys

# Add repository root to path so the package imports work from any working directory
current_dir = os.path.dirname(os.path.abspath(__file__))
if current_dir not in sys.path:
    sys.path.insert(0, current_dir)

from adamcmc.cli import main


if __name__ == '__main__':
    sys.exit(main())
