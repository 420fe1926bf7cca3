import logging
import os

from dotenv import load_dotenv

DEFAULT_THREAD_CAP = 8


def load_thread_cap() -> int:
    """
    SOFT2HARD_THREADS ограничивает параллельность свипов.
    Форматы:
      SOFT2HARD_THREADS=4
      (пусто) -> min(cpu_count, 8)
    """
    load_dotenv()
    raw = os.getenv("SOFT2HARD_THREADS", "").strip()
    if not raw:
        return max(1, min(os.cpu_count() or 1, DEFAULT_THREAD_CAP))
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"SOFT2HARD_THREADS должен быть целым числом. Ошибка в: '{raw}'")
    if value < 1:
        raise ValueError(f"SOFT2HARD_THREADS должен быть >= 1, получено {value}")
    return value


def load_log_level() -> int:
    load_dotenv()
    raw = os.getenv("SOFT2HARD_LOG_LEVEL", "INFO").strip().upper() or "INFO"
    level = logging.getLevelName(raw)
    if not isinstance(level, int):
        raise ValueError(f"SOFT2HARD_LOG_LEVEL: неизвестный уровень '{raw}'")
    return level


def load_output_dir() -> str:
    load_dotenv()
    return os.getenv("SOFT2HARD_OUT", "").strip() or "./results"
