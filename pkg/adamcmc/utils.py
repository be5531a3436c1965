"""
공통 유틸리티 함수 모듈
로깅 설정, 일관된 예외 처리, 리포트용 숫자 포맷팅을 제공
"""

from typing import Any, Callable, TypeVar, Optional
import logging
import math

# 로깅 설정 (CLI에서 --verbose/--quiet로 레벨 조정)
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

T = TypeVar('T')


def set_log_level(verbose: bool = False, quiet: bool = False) -> None:
    """
    루트 로거 레벨 조정

    Args:
        verbose: DEBUG 레벨 사용
        quiet: WARNING 이상만 출력 (verbose보다 우선)
    """
    if quiet:
        level = logging.WARNING
    elif verbose:
        level = logging.DEBUG
    else:
        level = logging.INFO
    logging.getLogger().setLevel(level)


def format_number(value: Any, digits: int = 2) -> str:
    """
    숫자를 읽기 쉬운 형식으로 포맷팅

    Args:
        value: 포맷팅할 숫자 값 (int, float, None 등)
        digits: 소수점 자리수

    Returns:
        포맷팅된 문자열 (예: "52.0K", "3.75", "N/A")
    """
    if value is None:
        return 'N/A'

    try:
        num = float(value)
        if math.isnan(num):
            return 'N/A'
        if math.isinf(num):
            return '-inf' if num < 0 else 'inf'
        if abs(num) >= 1e6:
            return f"{num/1e6:.{digits}f}M"
        elif abs(num) >= 1e4:
            return f"{num/1e3:.{digits}f}K"
        else:
            return f"{num:.{digits}f}"
    except (ValueError, TypeError):
        return str(value)


def safe_execute(
    func: Callable[..., T],
    default_return: T,
    error_message: Optional[str] = None,
    log_error: bool = True
) -> T:
    """
    함수 실행을 안전하게 처리하는 헬퍼 함수
    (선택적 진단값 계산에만 사용 - 샘플러/필터 본체는 예외를 그대로 전파)

    Args:
        func: 실행할 함수 (인자 없는 callable)
        default_return: 예외 발생 시 반환할 기본값
        error_message: 에러 메시지 (기본값: 함수명 사용)
        log_error: 에러 로깅 여부

    Returns:
        함수 실행 결과 또는 default_return

    Usage:
        ess = safe_execute(
            lambda: effective_sample_size(column),
            None,
            "Error computing ESS"
        )
    """
    try:
        return func()
    except Exception as e:
        if log_error:
            msg = error_message or f"Error in {getattr(func, '__name__', 'callable')}"
            logger.error(f"{msg}: {e}")
        return default_return


def safe_divide(
    numerator: Any,
    denominator: Any,
    default: Any = None
) -> Any:
    """
    안전한 나눗셈 연산

    Args:
        numerator: 분자
        denominator: 분모
        default: 분모가 0이거나 None/NaN일 때 반환할 값

    Returns:
        나눗셈 결과 또는 default
    """
    try:
        if numerator is None or denominator is None:
            return default
        num = float(numerator)
        den = float(denominator)
        if math.isnan(num) or math.isnan(den) or den == 0:
            return default
        return num / den
    except (ValueError, TypeError, ZeroDivisionError):
        return default


def safe_percent(numerator: Any, denominator: Any, digits: int = 2) -> Optional[float]:
    """분모가 0이면 None, 아니면 [0, 100] 범위의 백분율"""
    ratio = safe_divide(numerator, denominator)
    if ratio is None:
        return None
    return round(100.0 * ratio, digits)
