"""rsflow: 実数値スペクトルフロー計算・検証ツール"""

__version__ = "0.1.0"
