import sys

from src.cli import main

if __name__ == "__main__":
    # `python main.py serve` starts the API with uvicorn
    sys.exit(main())
