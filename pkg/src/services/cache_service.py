from collections import OrderedDict
from functools import wraps
from threading import Lock
from typing import Any, Callable, Dict
import logging

logger = logging.getLogger(__name__)


class CacheManager:
    """Named least-recently-used caches for deterministic, expensive values."""

    _caches: Dict[str, "OrderedDict[Any, Any]"] = {}
    _max_sizes: Dict[str, int] = {}
    _lock = Lock()

    @classmethod
    def init_cache(cls, cache_name: str, max_size: int = 32):
        """Initialize a new cache with given name and max size"""
        with cls._lock:
            cls._caches[cache_name] = OrderedDict()
            cls._max_sizes[cache_name] = max_size

    @classmethod
    def get(cls, cache_name: str, key: Any):
        with cls._lock:
            cache = cls._caches[cache_name]
            if key not in cache:
                return None
            cache.move_to_end(key)
            return cache[key]

    @classmethod
    def put(cls, cache_name: str, key: Any, value: Any):
        with cls._lock:
            cache = cls._caches[cache_name]
            cache[key] = value
            cache.move_to_end(key)
            while len(cache) > cls._max_sizes[cache_name]:
                evicted, _ = cache.popitem(last=False)
                logger.debug(f"cache {cache_name}: evicted {evicted!r}")

    @classmethod
    def size(cls, cache_name: str) -> int:
        return len(cls._caches.get(cache_name, ()))

    @classmethod
    def clear_all(cls):
        """Clear all caches"""
        with cls._lock:
            for cache in cls._caches.values():
                cache.clear()


def memoized(cache_name: str = "default", max_size: int = 32):
    """
    Cache a pure function's result keyed on its (hashable) arguments.

    Args:
        cache_name (str): Name of the cache to use
        max_size (int): Maximum number of items in the cache
    """
    def decorator(func: Callable) -> Callable:
        if cache_name not in CacheManager._caches:
            CacheManager.init_cache(cache_name, max_size)

        @wraps(func)
        def wrapper(*args, **kwargs):
            cache_key = (func.__qualname__, args, tuple(sorted(kwargs.items())))
            cached = CacheManager.get(cache_name, cache_key)
            if cached is not None:
                return cached
            result = func(*args, **kwargs)
            CacheManager.put(cache_name, cache_key, result)
            return result

        return wrapper
    return decorator
