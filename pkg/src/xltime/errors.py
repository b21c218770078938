"""Exception hierarchy shared by all pipeline stages."""


class XLTimeError(Exception):
    """Base class for every error raised by this package."""


class DataValidationError(XLTimeError, ValueError):
    """Input data does not satisfy the expected format or invariants."""


class TranslationError(XLTimeError):
    """A translation request failed after all retries."""


class OfflineCacheMiss(XLTimeError):
    """Offline mode was requested but some translations are not cached."""

    def __init__(self, missing):
        self.missing = list(missing)
        preview = "; ".join(f"{lang}->{tgt}: {text!r}" for text, lang, tgt in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (and {len(self.missing) - 10} more)"
        super().__init__(f"{len(self.missing)} translation(s) missing from cache: {preview}{more}")


class TrainingError(XLTimeError):
    """Training could not proceed (for example a non-finite loss)."""


class EvaluationMismatch(XLTimeError):
    """Predictions and gold data (or vocabularies) do not line up."""
