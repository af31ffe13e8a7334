# germlab Package
"""
germlab - 写像の芽の同時線形化と CR 特異点の計算ツール
"""

__version__ = "1.0.0"
