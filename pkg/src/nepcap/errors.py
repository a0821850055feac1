"""Exception hierarchy shared by every nepcap module."""


class NepcapError(Exception):
    """Base class; the CLI turns these into a one-line diagnostic."""


class MalformedLineError(NepcapError, ValueError):
    def __init__(self, line_no, line):
        super().__init__(f"line {line_no}: expected '<video_id> <caption>', got {line!r}")
        self.line_no = line_no


class TranslationFailedError(NepcapError):
    def __init__(self, video_id, cause=None):
        super().__init__(f"translation failed for video {video_id!r}: {cause}")
        self.video_id = video_id


class MissingTranslationError(NepcapError, KeyError):
    def __init__(self, video_id, english):
        super().__init__(f"no cached translation for video {video_id!r} ({english!r}) in offline mode")
        self.video_id = video_id

    def __str__(self):
        return self.args[0]


class InsufficientDataError(NepcapError, ValueError):
    pass


class InvalidIdError(NepcapError, ValueError):
    pass


class EmptyVideoError(NepcapError, ValueError):
    pass


class DecodeError(NepcapError):
    def __init__(self, video_id, detail):
        super().__init__(f"cannot decode video {video_id!r}: {detail}")
        self.video_id = video_id


class UnknownBackboneError(NepcapError, KeyError):
    def __str__(self):
        return self.args[0]


class CacheMissError(NepcapError, FileNotFoundError):
    pass


class CorruptCacheError(NepcapError, ValueError):
    pass


class MissingFeatureError(NepcapError, KeyError):
    def __init__(self, video_ids):
        ids = sorted(set(video_ids))
        super().__init__(f"missing features for {len(ids)} video(s): {', '.join(ids)}")
        self.video_ids = ids

    def __str__(self):
        return self.args[0]


class ConfigError(NepcapError, ValueError):
    pass


class ShapeError(NepcapError, ValueError):
    pass


class DivergedTrainingError(NepcapError, FloatingPointError):
    def __init__(self, epoch, step):
        super().__init__(f"loss became NaN at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


class IncompatibleVocabError(NepcapError, ValueError):
    pass


class EmptyCorpusError(NepcapError, ValueError):
    pass


class GridError(NepcapError):
    pass
