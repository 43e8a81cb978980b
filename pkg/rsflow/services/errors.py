"""例外定義モジュール

すべての例外は機械可読な ``reason`` を持つ。CLI はこの値をそのまま
エラーレポートに書き出す。
"""


class RsflowError(Exception):
    """rsflow の基底例外"""

    reason: str = "error"

    def __init__(self, message: str, reason: str | None = None) -> None:
        super().__init__(message)
        if reason is not None:
            self.reason = reason

    def to_dict(self) -> dict:
        """エラーレポート用の辞書に変換する"""
        return {"status": "error", "reason": self.reason, "message": str(self)}


class ConstructionError(RsflowError):
    """環・元の構成エラー"""

    reason = "construction_error"


class DomainError(RsflowError):
    """関数が必要な点で定義されていない"""

    reason = "function_domain"


class PreconditionError(RsflowError):
    """演算の前提条件違反"""

    reason = "precondition"


class QuadratureError(RsflowError):
    """数値積分が収束しなかった"""

    reason = "quadrature_not_converged"

    def __init__(self, message: str, estimate: float, reason: str | None = None) -> None:
        super().__init__(message, reason)
        self.estimate = estimate

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["estimate"] = self.estimate
        return data


class ConsistencyError(RsflowError):
    """二通りの計算結果の内部不一致"""

    reason = "internal_inconsistency"


class ParameterError(ConstructionError):
    """組み込み族のパラメータ誤り

    key は params 内の名前（例: "offset", "maps[1].matrix"）。
    """

    reason = "invalid_parameter"

    def __init__(self, message: str, key: str, reason: str | None = None) -> None:
        super().__init__(message, reason)
        self.key = key

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["key"] = self.key
        return data
