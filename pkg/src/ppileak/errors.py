"""Exception hierarchy shared by all pipeline stages."""


class PpiLeakError(Exception):
    """Base class for operational failures raised by ppileak."""


class ParseError(PpiLeakError, ValueError):
    def __init__(self, message, line_number=None, record=None):
        self.line_number = line_number
        self.record = record
        context = ""
        if line_number is not None:
            context = f" (line {line_number}"
            if record is not None:
                context += f": {record.rstrip()!r}"
            context += ")"
        super().__init__(message + context)


class UnsupportedFormat(PpiLeakError, ValueError):
    pass


class IdenticalChains(PpiLeakError, ValueError):
    pass


class ChainNotFound(PpiLeakError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "chain not found"


class InterfaceTooSmall(PpiLeakError, ValueError):
    pass


class DuplicatePpiId(PpiLeakError, ValueError):
    pass


class ConfigMismatch(PpiLeakError, ValueError):
    pass


class DegenerateLabels(PpiLeakError, ValueError):
    pass


class EmptySequence(PpiLeakError, ValueError):
    pass


class ToolNotFound(PpiLeakError, FileNotFoundError):
    pass


class ToolFailed(PpiLeakError, RuntimeError):
    def __init__(self, message, returncode=None, stderr=""):
        self.returncode = returncode
        self.stderr = stderr
        super().__init__(f"{message} (exit code {returncode}): {stderr.strip()}")


class EmptyInput(PpiLeakError, ValueError):
    pass


class MissingDate(PpiLeakError, ValueError):
    def __init__(self, codes):
        self.codes = sorted(codes)
        super().__init__("no deposition date for PDB codes: " + ", ".join(self.codes))


class UnclusteredProtein(PpiLeakError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "protein has no cluster"


class MissingDescriptor(PpiLeakError, KeyError):
    def __init__(self, ppi_ids):
        self.ppi_ids = sorted(str(p) for p in ppi_ids)
        shown = ", ".join(self.ppi_ids[:10])
        more = f" (+{len(self.ppi_ids) - 10} more)" if len(self.ppi_ids) > 10 else ""
        super().__init__(f"no descriptor for PPIs: {shown}{more}")

    def __str__(self):
        return self.args[0]


class UnknownFold(PpiLeakError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown fold"
