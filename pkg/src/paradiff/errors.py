"""Exceptions mapped to CLI exit codes: config 2, data 3, numeric 4."""


class ConfigError(Exception):
    exit_code = 2


class DataError(Exception):
    exit_code = 3


class NumericError(Exception):
    exit_code = 4
