"""Exception types shared across the toolkit."""


class DataError(Exception):
    """Malformed or inconsistent input data (files, records, dictionaries).

    Raised for problems a user can fix in their inputs; messages name the
    offending file, line, or record where possible. The CLI maps this to
    exit code 2.
    """
