"""
공통 예외
- 각 예외는 CLI 종료 코드를 가진다 (2 사용 오류, 3 데이터 오류, 4 수치 오류)
"""


class HybridFieldError(Exception):
    """하이브리드 필드 기본 예외"""

    exit_code = 1


class ConfigError(HybridFieldError):
    """설정/사용법 오류"""

    exit_code = 2


class DataError(HybridFieldError):
    """데이터셋, 체크포인트, 입력 데이터 오류"""

    exit_code = 3


class GeometryError(DataError):
    """카메라/장면 기하 조건 위반"""


class InvalidPixelError(GeometryError):
    """어안 이미지 원 밖의 픽셀"""


class NumericError(HybridFieldError):
    """손실 발산 등 수치 오류"""

    exit_code = 4

    def __init__(self, message: str, step: int = None, components: dict = None):
        super().__init__(message)
        self.step = step
        self.components = components or {}
