"""数値計算サービス"""
