"""Exception hierarchy shared by all grocer_rank modules."""


class GrocerRankError(Exception):
    """Base class for every error raised by this package."""


class DataError(GrocerRankError):
    """Input data is malformed or cannot support the requested operation."""


class ConfigError(GrocerRankError):
    """A configuration value lies outside its documented domain."""
