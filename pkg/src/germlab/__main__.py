"""
germlab - python -m germlab / 実行ファイルの入口
"""

import sys

from germlab.germlab import main

if __name__ == "__main__":
    sys.exit(main())
