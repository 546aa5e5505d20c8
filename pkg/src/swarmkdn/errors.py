"""Exception hierarchy shared across the stack."""


class SwarmKdnError(Exception):
    pass


# data plane

class PacketError(SwarmKdnError):
    pass


class TruncatedFrame(PacketError):
    pass


class BadIntStack(PacketError):
    pass


class InvariantViolation(PacketError):
    pass


class TableError(SwarmKdnError):
    pass


class AlreadyExists(TableError):
    pass


class NotFound(TableError):
    pass


class InvalidEntry(TableError):
    pass


class UnknownGroup(TableError):
    pass


class TopologyError(SwarmKdnError):
    pass


class UnknownHost(TopologyError):
    pass


class UnknownSwitch(TopologyError):
    pass


# control channel

class CodecError(SwarmKdnError):
    """Decoding failure; ``offset`` is the byte position that could not be decoded."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class BadMagic(CodecError):
    pass


class BadLength(CodecError):
    pass


class UnknownType(CodecError):
    pass


class MalformedBody(CodecError):
    pass


# knowledge graph

class EmptyId(SwarmKdnError, ValueError):
    pass


class NotFunctional(SwarmKdnError):
    pass


class QueryError(SwarmKdnError):
    pass


class SparqlSyntaxError(QueryError):
    def __init__(self, message, line, column):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class UnknownPrefix(QueryError):
    pass


class UnboundVariable(QueryError):
    pass


class UnknownSourceHost(UserWarning):
    """INT report whose source IP has no host in the graph."""


# controller

class ControllerError(SwarmKdnError):
    pass


class DuplicateBootstrap(ControllerError):
    pass


class UnknownPublisher(ControllerError):
    pass


class NoPath(ControllerError):
    pass


class NoCapableNode(ControllerError):
    pass


class UnknownSwitchInReport(ControllerError):
    pass


# scenarios

class ScenarioError(SwarmKdnError):
    pass


class ParseError(ScenarioError):
    def __init__(self, message, path=None, line=None):
        where = f"{path or '<scenario>'}:{line}" if line is not None else str(path or "<input>")
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


class UnknownEntity(ScenarioError):
    pass
