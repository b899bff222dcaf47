"""Exception hierarchy shared by every process kind."""


class SealMRError(Exception):
    pass


# wire / envelope
class AuthFailure(SealMRError):
    pass


class ParseFailure(SealMRError):
    pass


class UnknownType(ParseFailure):
    pass


# sealed region
class RegionFault(SealMRError):
    pass


# router
class DuplicateId(SealMRError):
    pass


class InvalidSubscription(SealMRError):
    pass


# scripts
class ScriptError(SealMRError):
    pass


class ScriptSyntaxError(ScriptError):
    pass


class MissingEntryPoint(ScriptError):
    pass


class RoleMismatch(ScriptError):
    pass


class ScriptFault(ScriptError):
    pass


class HashOutOfRange(ScriptFault):
    pass


# client / transport
class RouterUnreachable(SealMRError):
    pass


class HiringTimeout(SealMRError):
    pass


class ResultTimeout(SealMRError):
    pass


class DuplicateKeyAcrossReducers(SealMRError):
    pass
