"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front-end can map
failures onto its documented status codes without a lookup table.
"""


class AtypiaError(Exception):
    """Base class for all library errors."""

    exit_code = 4

    def to_record(self):
        return {"error": type(self).__name__, "message": str(self)}


class InputError(AtypiaError, ValueError):
    exit_code = 2


class ModelError(AtypiaError):
    exit_code = 3


class EmptySample(InputError):
    pass


class NonPositiveSample(InputError):
    pass


class DegenerateSample(InputError):
    pass


class NoApplicableFamily(InputError):
    pass


class SingleClassSample(InputError):
    pass


class InsufficientData(InputError):
    def __init__(self, cell, detail=""):
        self.cell = cell
        msg = f"insufficient data for {cell}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)

    def to_record(self):
        rec = super().to_record()
        rec["cell"] = str(self.cell)
        return rec


class VocabMismatch(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class TooFewVectors(InputError):
    pass


class InvalidK(InputError):
    pass


class InvalidSimplex(InputError):
    pass


class LengthMismatch(InputError):
    pass


class SimplexViolation(InputError):
    pass


class ParseError(InputError):
    def __init__(self, line, field, detail=""):
        self.line = line
        self.field = field
        msg = f"line {line}: bad field {field!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)

    def to_record(self):
        rec = super().to_record()
        rec.update(line=self.line, field=self.field)
        return rec


class ConfigError(InputError):
    pass


class UnsupportedVersion(ModelError):
    pass


class CorruptDocument(ModelError):
    pass


class MissingModel(ModelError):
    pass
