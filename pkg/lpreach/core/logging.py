"""
LPReach 日志配置模块

配置结构化日志，支持：
1. 控制台日志：stderr，彩色输出
2. 应用日志：log_dir/app/ 目录，按天轮转（log_to_file 开启时）
3. 错误日志：log_dir/error/ 目录，只记录 WARNING 及以上
4. 标准库 logging 统一转发到 Loguru
"""

import sys
import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional

from loguru import logger as loguru_logger


def _get_settings():
    """延迟导入配置，避免循环依赖"""
    from lpreach.core.config import settings
    return settings


class InterceptHandler(logging.Handler):
    """拦截标准logging并重定向到Loguru"""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level = loguru_logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        # 找到日志消息的调用者
        frame, depth = logging.currentframe(), 2
        while frame is not None and frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        loguru_logger.opt(depth=depth, exception=record.exc_info).log(
            level, record.getMessage()
        )


def setup_console_logging(level: Optional[str] = None) -> None:
    """设置控制台日志"""
    settings = _get_settings()

    # 移除默认处理器
    loguru_logger.remove()

    format_str = (
        "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
        "<level>{level: <8}</level> | "
        "<cyan>{name}</cyan> | "
        "<level>{message}</level>"
    )

    # stdout 留给命令输出
    loguru_logger.add(
        sys.stderr,
        format=format_str,
        level=(level or settings.log_level).upper(),
        colorize=True,
        backtrace=True,
        diagnose=settings.debug,
    )


def setup_file_logging(log_dir: Optional[Path] = None, level: Optional[str] = None) -> Path:
    """设置文件日志，支持按天轮转和自动压缩"""
    settings = _get_settings()

    app_log_dir = Path(log_dir or settings.log_dir) / "app"
    app_log_dir.mkdir(parents=True, exist_ok=True)
    app_log_file = app_log_dir / "lpreach_{time:YYYY-MM-DD}.log"

    format_str = (
        "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
        "<level>{level: <8}</level> | "
        "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | "
        "<level>{message}</level>"
    )

    loguru_logger.add(
        str(app_log_file),
        format=format_str,
        level=(level or settings.log_level).upper(),
        rotation="00:00",    # 每天午夜轮转
        retention=settings.log_retention,
        compression="gz",    # 轮转后压缩为 .gz 格式
        enqueue=True,        # 线程安全，batch worker 也会写日志
        backtrace=True,
        diagnose=True,
    )
    return app_log_file


def setup_third_party_logging() -> None:
    """设置第三方库的日志级别"""
    # 拦截标准库日志
    logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)

    # 减少噪音
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("PIL").setLevel(logging.WARNING)


@lru_cache()
def setup_logging(level: Optional[str] = None, log_to_file: Optional[bool] = None) -> Any:
    """设置完整的日志配置（缓存）"""
    settings = _get_settings()
    to_file = settings.log_to_file if log_to_file is None else log_to_file

    setup_console_logging(level)

    if to_file:
        app_log_file = setup_file_logging(level=level)
        from lpreach.core.error_logging import setup_error_logging
        setup_error_logging(settings.log_dir)

    setup_third_party_logging()

    logger = loguru_logger.bind()
    logger.debug(f"LPReach logging configured - Level: {(level or settings.log_level).upper()}")
    if to_file:
        logger.debug(f"App Log: {app_log_file}")
    return logger
