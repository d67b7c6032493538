#!/usr/bin/env python3
"""
blindseg launcher

    python main.py run --spec unet.yaml --image x.bunt --weights w.bunw
"""

from src.cli.main import main

if __name__ == "__main__":
    main()
