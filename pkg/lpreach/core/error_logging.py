"""
LPReach 错误日志专用配置

记录 WARNING 及以上级别的信息（被标记的 refinement、order violation、
未收敛的 nudge、CLI 失败）到独立的日志文件，按天轮转
"""

from functools import lru_cache
from pathlib import Path

from loguru import logger as loguru_logger


class ErrorLogger:
    """错误日志专用记录器"""

    def __init__(self, log_dir: Path):
        self.log_file = self._setup_error_logger(Path(log_dir))

    def _setup_error_logger(self, log_dir: Path) -> Path:
        error_log_dir = log_dir / "error"
        error_log_dir.mkdir(parents=True, exist_ok=True)

        error_log_file = error_log_dir / "error_{time:YYYY-MM-DD}.log"

        loguru_logger.add(
            str(error_log_file),
            format=(
                "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | "
                "<level>{level: <8}</level> | "
                "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | "
                "<level>{message}</level>"
            ),
            level="WARNING",
            rotation="00:00",
            compression="gz",
            enqueue=True,
            backtrace=True,
            diagnose=True,
            filter=lambda record: record["level"].no >= 30,  # WARNING(30)及以上
        )
        return error_log_file


@lru_cache()
def setup_error_logging(log_dir: Path) -> Path:
    """设置错误日志（单例）"""
    return ErrorLogger(log_dir).log_file
