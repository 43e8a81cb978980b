"""サービスのテスト"""
