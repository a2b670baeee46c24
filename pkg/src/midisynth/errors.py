"""Shared exception types.

Structural problems with inputs (malformed files, corrupt checkpoints)
raise subclasses of MidiSynthError.  Plain argument-domain mistakes
(values out of range, empty collections) raise ValueError, sometimes a
named subclass of it when callers want to tell the cases apart.
"""


class MidiSynthError(Exception):
    """Base class for structural input errors raised by this package."""


class MalformedHeader(MidiSynthError):
    """MIDI file header chunk missing, short, or of an unsupported format."""


class UnsupportedDivision(MidiSynthError):
    """MIDI time division is SMPTE-based; only ticks-per-quarter is handled."""


class TruncatedTrack(MidiSynthError):
    """A MIDI track chunk ended mid-event or overran the file."""


class FileFormatError(MidiSynthError):
    """A binary file (WAV or feature matrix) does not match its format."""


class CorruptCheckpoint(MidiSynthError):
    """Checkpoint bytes are truncated, fail CRC, or disagree with the config."""


class SampleRateMismatch(ValueError):
    """Two signals (or a signal and a config) carry different sample rates."""


class LengthMismatch(ValueError):
    """Aligned sequences have incompatible lengths."""


class DimensionMismatch(ValueError):
    """A matrix width disagrees with what the model config requires."""


class NyquistViolation(ValueError):
    """A requested oscillator frequency is at or above half the sample rate."""
