__all__ = [
    'VodCacheError',
    'ConfigurationError',
    'ParseError',
    'ValidationError',
    'DomainError',
    'CacheInvariantError',
]


class VodCacheError(Exception):
    """Base class of every error raised by vodcache."""

    category = 'vodcache'


class ConfigurationError(VodCacheError):
    """Invalid or inconsistent parameters. Carries every problem found, not just the first."""

    category = 'configuration'

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ParseError(VodCacheError):
    category = 'parse'

    def __init__(self, message: str, path=None, line: int = None, field: str = None):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ValidationError(VodCacheError):
    category = 'validation'

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        shown = self.violations[:5]
        more = len(self.violations) - len(shown)
        message = "; ".join(shown)
        if more > 0:
            message += f" (+{more} more)"
        super().__init__(message)


class DomainError(VodCacheError, ValueError):
    category = 'domain'


class CacheInvariantError(VodCacheError, AssertionError):
    """Raised in debug mode when a cache invariant is broken."""

    category = 'invariant'
