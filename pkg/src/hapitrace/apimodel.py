"""Declarative API models: header parsing, YAML (de)serialization, meta-parameter overlays.

An :class:`ApiModel` describes a traced API: its functions, parameter types,
handle typedefs, enums, and property-struct layouts. Models come from two
sources: parsing a restricted C-style header (all parameter directions start
out ``unknown``) or loading the API-model YAML document. Expert knowledge
that headers cannot express (in/out directions, what lives behind a pointer,
tracing attributes) is applied afterwards as :class:`MetaParams`.

The restricted header grammar accepts: ``typedef void* X;`` style handle
typedefs (including opaque struct pointers), ``typedef enum {...} X;``
blocks with integer constants, ``typedef struct {...} X;`` blocks of
fixed-width scalar fields with one optional leading ``pNext`` extension
slot, and single-line-or-wrapped function prototypes. Preprocessor lines
are skipped, never interpreted.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import yaml

from .errors import HeaderSyntaxError, MetaParamError, ModelError, ModelSchemaError

DIRECTIONS = ("in", "out", "inout", "unknown")
ATTR_FLAGS = (
    "minimal_included",
    "default_excluded",
    "profiled",
    "creates_handle",
    "releases_handle",
)
DEREF_KINDS = ("scalar", "array", "blob")

# base C type name -> (payload kind, byte width)
_SCALAR_KINDS = {
    "uint8_t": ("u64", 1),
    "uint16_t": ("u64", 2),
    "uint32_t": ("u64", 4),
    "uint64_t": ("u64", 8),
    "size_t": ("u64", 8),
    "unsigned": ("u64", 4),
    "int8_t": ("i64", 1),
    "int16_t": ("i64", 2),
    "int32_t": ("i64", 4),
    "int64_t": ("i64", 8),
    "int": ("i64", 4),
    "long": ("i64", 8),
    "float": ("f64", 4),
    "double": ("f64", 8),
}


@dataclass(frozen=True)
class DerefSpec:
    """What lives behind an address-valued parameter.

    ``scalar``: one value; ``value_kind`` may be left None and is then
    inferred from the pointee type. ``array``: ``length_param`` names the
    parameter holding the length, interpreted in ``unit`` ("bytes" or
    "elements" of ``elem_size`` bytes). ``blob``: an opaque sized region;
    ``size`` may be None when the pointee is a known struct.
    """

    kind: str
    value_kind: str | None = None
    length_param: str | None = None
    unit: str = "bytes"
    elem_size: int = 1
    size: int | None = None


@dataclass(frozen=True)
class ParamDecl:
    name: str
    c_type: str
    direction: str = "unknown"
    deref: DerefSpec | None = None
    is_handle: bool = False


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    return_type: str
    params: tuple[ParamDecl, ...]
    attrs: frozenset[str] = frozenset()


@dataclass(frozen=True)
class StructField:
    name: str
    kind: str
    width: int


@dataclass(frozen=True)
class StructDef:
    name: str
    fields: tuple[StructField, ...]

    @property
    def byte_size(self) -> int:
        return sum(f.width for f in self.fields)

    def field_offset(self, name: str) -> int:
        off = 0
        for f in self.fields:
            if f.name == name:
                return off
            off += f.width
        raise KeyError(name)


@dataclass(frozen=True)
class ApiModel:
    api_name: str
    version: str
    functions: tuple[FunctionDecl, ...]
    struct_defs: dict[str, StructDef] = field(default_factory=dict)
    enums: dict[str, dict[str, int]] = field(default_factory=dict)
    handles: frozenset[str] = frozenset()
    profiling_hook: str | None = None

    def function(self, name: str) -> FunctionDecl:
        for fn in self.functions:
            if fn.name == name:
                return fn
        raise KeyError(name)

    def base_type(self, c_type: str) -> tuple[str, int]:
        """Strip const/pointers and return (base name, pointer depth)."""
        t = c_type.replace("const ", "").replace("const", "")
        depth = t.count("*")
        return t.replace("*", "").strip(), depth

    def is_address_valued(self, p: ParamDecl) -> bool:
        base, depth = self.base_type(p.c_type)
        return depth > 0 or base in self.handles

    def stack_kind(self, c_type: str) -> str:
        """Payload kind used when capturing this type from the call stack."""
        base, depth = self.base_type(c_type)
        if depth > 0:
            if base == "char" and depth == 1:
                return "string"
            return "address"
        if base in self.handles:
            return "address"
        if base in self.enums:
            return "i64"
        if base in _SCALAR_KINDS:
            return _SCALAR_KINDS[base][0]
        raise ModelError(f"no payload kind for type {c_type!r}")

    def pointee_kind(self, c_type: str) -> str | None:
        """Payload kind of the value behind one level of indirection."""
        base, depth = self.base_type(c_type)
        if depth == 0 and base not in self.handles:
            return None
        if depth >= 2 or (depth == 1 and base == "void") or base in self.handles:
            return "address"
        if base in self.enums:
            return "i64"
        if base in _SCALAR_KINDS:
            return _SCALAR_KINDS[base][0]
        if base in self.struct_defs:
            return "blob"
        return None


@dataclass(frozen=True)
class ParamMeta:
    direction: str | None = None
    deref: DerefSpec | None = None


@dataclass(frozen=True)
class FunctionMeta:
    attrs: frozenset[str] = frozenset()
    params: dict[str, ParamMeta] = field(default_factory=dict)


@dataclass(frozen=True)
class MetaParams:
    functions: dict[str, FunctionMeta] = field(default_factory=dict)
    profiling_hook: str | None = None


# ---------------------------------------------------------------------------
# header parsing


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(source: str):
    tokens = []
    line, col = 1, 1
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":  # preprocessor line: skipped, not interpreted
            while i < n and source[i] != "\n":
                i += 1
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        if source.startswith("/*", i):
            end = source.find("*/", i + 2)
            if end < 0:
                raise HeaderSyntaxError("unterminated comment", line, col)
            skipped = source[i : end + 2]
            line += skipped.count("\n")
            col = 1 if "\n" in skipped else col + len(skipped)
            i = end + 2
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(_Token("ident", source[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isdigit() or (c == "-" and i + 1 < n and source[i + 1].isdigit()):
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] in "xX"):
                j += 1
            tokens.append(_Token("number", source[i:j], line, col))
            col += j - i
            i = j
            continue
        if c in "*;,(){}=":
            tokens.append(_Token(c, c, line, col))
            i += 1
            col += 1
            continue
        raise HeaderSyntaxError(f"unexpected character {c!r}", line, col)
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _HeaderParser:
    def __init__(self, source: str):
        self.toks = _tokenize(source)
        self.pos = 0
        self.handles: set[str] = set()
        self.enums: dict[str, dict[str, int]] = {}
        self.structs: dict[str, StructDef] = {}
        self.functions: list[FunctionDecl] = []

    def peek(self) -> _Token:
        return self.toks[self.pos]

    def next(self) -> _Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, kind: str, what: str | None = None) -> _Token:
        t = self.next()
        if t.kind != kind:
            raise HeaderSyntaxError(
                f"expected {what or kind}, found {t.text or 'end of input'!r}",
                t.line,
                t.col,
            )
        return t

    def fail(self, msg: str, tok: _Token):
        raise HeaderSyntaxError(msg, tok.line, tok.col)

    def parse(self):
        while True:
            t = self.peek()
            if t.kind == "eof":
                break
            if t.kind == "ident" and t.text == "typedef":
                self.parse_typedef()
            elif t.kind == "ident" and t.text == "enum":
                self.parse_enum_body(None)
            elif t.kind == "ident":
                self.parse_function()
            else:
                self.fail(f"unexpected token {t.text!r} at top level", t)

    # typedef void* X; | typedef struct Y* X; | typedef enum {...} X; | typedef struct {...} X;
    def parse_typedef(self):
        self.expect("ident")  # typedef
        t = self.peek()
        if t.kind == "ident" and t.text == "enum":
            self.next()
            self.parse_enum_body(typedef=True)
            return
        if t.kind == "ident" and t.text == "struct":
            self.next()
            nxt = self.peek()
            if nxt.kind == "ident":  # opaque struct pointer handle
                self.next()
                self.expect("*", "'*' in opaque handle typedef")
                name = self.expect("ident", "handle type name").text
                self.expect(";")
                self.handles.add(name)
                return
            self.parse_struct_body()
            return
        if t.kind == "ident" and t.text == "void":
            self.next()
            self.expect("*", "'*' in handle typedef")
            name = self.expect("ident", "handle type name").text
            self.expect(";")
            self.handles.add(name)
            return
        self.fail("unsupported typedef form", t)

    def parse_enum_body(self, typedef=False):
        name = None
        if not typedef:
            self.next()  # 'enum'
            name = self.expect("ident", "enum name").text
        self.expect("{")
        members: dict[str, int] = {}
        while True:
            t = self.peek()
            if t.kind == "}":
                self.next()
                break
            const = self.expect("ident", "enum constant").text
            self.expect("=", "'=' with explicit enum value")
            num = self.expect("number", "integer enum value").text
            members[const] = int(num, 0)
            if self.peek().kind == ",":
                self.next()
        if typedef:
            name = self.expect("ident", "enum type name").text
        self.expect(";")
        if name in self.enums:
            raise ModelError(f"duplicate enum {name}")
        self.enums[name] = members

    def parse_struct_body(self):
        self.expect("{")
        fields: list[StructField] = []
        while self.peek().kind != "}":
            base_tok = self.expect("ident", "struct field type")
            base = base_tok.text
            stars = 0
            while self.peek().kind == "*":
                self.next()
                stars += 1
            fname = self.expect("ident", "struct field name").text
            self.expect(";")
            if stars:
                if base != "void" or stars != 1 or fname != "pNext":
                    self.fail("only a leading void* pNext field may be a pointer", base_tok)
                kind, width = "address", 8
            elif base in _SCALAR_KINDS:
                kind, width = _SCALAR_KINDS[base]
            else:
                self.fail(f"struct fields must be fixed-width scalars, got {base!r}", base_tok)
            if fname == "pNext" and fields:
                self.fail("pNext must be the leading field", base_tok)
            fields.append(StructField(fname, kind, width))
        self.next()  # }
        name = self.expect("ident", "struct type name").text
        self.expect(";")
        if name in self.structs:
            raise ModelError(f"duplicate struct {name}")
        self.structs[name] = StructDef(name, tuple(fields))

    def parse_type(self) -> str:
        parts = []
        t = self.expect("ident", "type name")
        if t.text == "const":
            parts.append("const")
            t = self.expect("ident", "type name")
        parts.append(t.text)
        text = " ".join(parts)
        while self.peek().kind == "*":
            self.next()
            text += "*"
        return text

    def parse_function(self):
        ret = self.parse_type()
        name = self.expect("ident", "function name").text
        self.expect("(", "'(' after function name")
        params: list[ParamDecl] = []
        if self.peek().kind != ")":
            while True:
                c_type = self.parse_type()
                pname = self.expect("ident", "parameter name").text
                base = c_type.replace("const ", "").replace("*", "").strip()
                params.append(
                    ParamDecl(pname, c_type, is_handle=base in self.handles)
                )
                t = self.next()
                if t.kind == ")":
                    break
                if t.kind != ",":
                    self.fail("expected ',' or ')' in parameter list", t)
        else:
            self.next()
        self.expect(";")
        if any(f.name == name for f in self.functions):
            raise ModelError(f"duplicate function {name}")
        seen = set()
        for p in params:
            if p.name in seen:
                raise ModelError(f"duplicate parameter {p.name} in {name}")
            seen.add(p.name)
        self.functions.append(FunctionDecl(name, ret, tuple(params)))


def parse_header_decls(source_text: str, api_name: str = "ze", version: str = "1.0") -> ApiModel:
    """Parse restricted C declarations into an ApiModel with unknown directions."""
    p = _HeaderParser(source_text)
    p.parse()
    model = ApiModel(
        api_name=api_name,
        version=version,
        functions=tuple(p.functions),
        struct_defs=dict(p.structs),
        enums=dict(p.enums),
        handles=frozenset(p.handles),
    )
    _validate_model(model)
    return model


# ---------------------------------------------------------------------------
# model validation


def _validate_model(model: ApiModel):
    names = set()
    for fn in model.functions:
        if fn.name in names:
            raise ModelError(f"duplicate function {fn.name}")
        names.add(fn.name)
        if {"minimal_included", "default_excluded"} <= fn.attrs:
            raise ModelError(
                f"{fn.name}: minimal_included and default_excluded are mutually exclusive"
            )
        unknown_attrs = fn.attrs - set(ATTR_FLAGS)
        if unknown_attrs:
            raise ModelError(f"{fn.name}: unknown attrs {sorted(unknown_attrs)}")
        pnames = set()
        for p in fn.params:
            if p.name in pnames:
                raise ModelError(f"duplicate parameter {p.name} in {fn.name}")
            pnames.add(p.name)
            _validate_param(model, fn, p)
        base, depth = model.base_type(fn.return_type)
        if depth == 0 and base not in model.enums and base not in _SCALAR_KINDS and base != "void":
            raise ModelError(f"{fn.name}: unresolvable return type {fn.return_type!r}")
    if model.profiling_hook is not None and model.profiling_hook not in names:
        raise ModelError(f"profiling hook {model.profiling_hook!r} is not a function")


def _validate_param(model: ApiModel, fn: FunctionDecl, p: ParamDecl):
    where = f"{fn.name}.{p.name}"
    base, depth = model.base_type(p.c_type)
    resolvable = (
        base in _SCALAR_KINDS
        or base in model.enums
        or base in model.handles
        or base in model.struct_defs
        or (base in ("void", "char") and depth > 0)
    )
    if not resolvable:
        raise ModelError(f"{where}: unresolvable type {p.c_type!r}")
    if p.direction not in DIRECTIONS:
        raise ModelError(f"{where}: bad direction {p.direction!r}")
    address_valued = model.is_address_valued(p)
    if p.direction in ("out", "inout") and not address_valued:
        raise ModelError(f"{where}: direction {p.direction} on a non-address parameter")
    if p.deref is not None:
        if not address_valued:
            raise ModelError(f"{where}: deref on a non-address parameter")
        d = p.deref
        if d.kind not in DEREF_KINDS:
            raise ModelError(f"{where}: bad deref kind {d.kind!r}")
        if d.kind == "array":
            if not d.length_param:
                raise ModelError(f"{where}: array deref needs a length parameter")
            lp = next((q for q in fn.params if q.name == d.length_param), None)
            if lp is None:
                raise ModelError(f"{where}: length parameter {d.length_param!r} not found")
            if model.stack_kind(lp.c_type) not in ("u64", "i64"):
                raise ModelError(f"{where}: length parameter {d.length_param!r} is not integral")
            if d.unit not in ("bytes", "elements"):
                raise ModelError(f"{where}: bad array unit {d.unit!r}")
        if d.kind == "blob" and d.size is None and base not in model.struct_defs:
            raise ModelError(f"{where}: blob deref needs a size (pointee is not a struct)")


# ---------------------------------------------------------------------------
# YAML serialization


def _deref_to_yaml(d: DerefSpec) -> dict:
    out: dict = {"kind": d.kind}
    if d.kind == "scalar" and d.value_kind:
        out["value"] = d.value_kind
    if d.kind == "array":
        out["length"] = d.length_param
        out["unit"] = d.unit
        if d.unit == "elements":
            out["elem_size"] = d.elem_size
    if d.kind == "blob" and d.size is not None:
        out["size"] = d.size
    return out


def _deref_from_yaml(node, path: str) -> DerefSpec:
    if not isinstance(node, dict) or "kind" not in node:
        raise ModelSchemaError("deref must be a mapping with a 'kind'", path)
    kind = node["kind"]
    if kind not in DEREF_KINDS:
        raise ModelSchemaError(f"bad deref kind {kind!r}", path)
    allowed = {"kind", "value", "length", "unit", "elem_size", "size"}
    extra = set(node) - allowed
    if extra:
        raise ModelSchemaError(f"unknown deref keys {sorted(extra)}", path)
    return DerefSpec(
        kind=kind,
        value_kind=node.get("value"),
        length_param=node.get("length"),
        unit=node.get("unit", "bytes"),
        elem_size=int(node.get("elem_size", 1)),
        size=node.get("size"),
    )


def dump_api_model_yaml(model: ApiModel) -> str:
    """Canonical YAML form; also the input to model fingerprinting."""
    doc: dict = {
        "api_name": model.api_name,
        "version": model.version,
        "handles": sorted(model.handles),
        "enums": {n: dict(v) for n, v in sorted(model.enums.items())},
        "structs": {
            n: {"fields": [{"name": f.name, "kind": f.kind, "width": f.width} for f in s.fields]}
            for n, s in sorted(model.struct_defs.items())
        },
        "functions": [],
    }
    if model.profiling_hook:
        doc["profiling_hook"] = model.profiling_hook
    for fn in model.functions:
        fdoc: dict = {"name": fn.name, "return": fn.return_type, "params": []}
        for p in fn.params:
            pdoc: dict = {"name": p.name, "type": p.c_type}
            if p.direction != "unknown":
                pdoc["direction"] = p.direction
            if p.deref is not None:
                pdoc["deref"] = _deref_to_yaml(p.deref)
            fdoc["params"].append(pdoc)
        if fn.attrs:
            fdoc["attrs"] = sorted(fn.attrs)
        doc["functions"].append(fdoc)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


def load_api_model_yaml(document: str) -> ApiModel:
    """Load and validate an API model from its YAML document form."""
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as e:
        raise ModelSchemaError(f"not valid YAML: {e}") from None
    if not isinstance(doc, dict):
        raise ModelSchemaError("document must be a mapping", "$")
    for key in ("api_name", "version", "functions"):
        if key not in doc:
            raise ModelSchemaError(f"missing required key {key!r}", "$")
    allowed = {"api_name", "version", "handles", "enums", "structs", "functions", "profiling_hook"}
    extra = set(doc) - allowed
    if extra:
        raise ModelSchemaError(f"unknown top-level keys {sorted(extra)}", "$")

    handles = frozenset(doc.get("handles") or [])
    enums_doc = doc.get("enums") or {}
    enums = {}
    for name, members in enums_doc.items():
        if not isinstance(members, dict):
            raise ModelSchemaError("enum members must be a mapping", f"enums.{name}")
        enums[name] = {k: int(v) for k, v in members.items()}
    structs = {}
    for name, body in (doc.get("structs") or {}).items():
        path = f"structs.{name}"
        if not isinstance(body, dict) or "fields" not in body:
            raise ModelSchemaError("struct needs a 'fields' list", path)
        fields = []
        for i, f in enumerate(body["fields"]):
            fpath = f"{path}.fields[{i}]"
            for k in ("name", "kind", "width"):
                if k not in f:
                    raise ModelSchemaError(f"struct field missing {k!r}", fpath)
            if f["kind"] not in ("u64", "i64", "f64", "address"):
                raise ModelSchemaError(f"bad field kind {f['kind']!r}", fpath)
            if int(f["width"]) not in (1, 2, 4, 8):
                raise ModelSchemaError(f"bad field width {f['width']}", fpath)
            fields.append(StructField(f["name"], f["kind"], int(f["width"])))
        structs[name] = StructDef(name, tuple(fields))

    functions = []
    if not isinstance(doc["functions"], list):
        raise ModelSchemaError("'functions' must be a list", "functions")
    for i, fdoc in enumerate(doc["functions"]):
        path = f"functions[{i}]"
        if not isinstance(fdoc, dict):
            raise ModelSchemaError("function entry must be a mapping", path)
        for k in ("name", "return", "params"):
            if k not in fdoc:
                raise ModelSchemaError(f"function missing {k!r}", path)
        fextra = set(fdoc) - {"name", "return", "params", "attrs"}
        if fextra:
            raise ModelSchemaError(f"unknown function keys {sorted(fextra)}", path)
        params = []
        for j, pdoc in enumerate(fdoc["params"]):
            ppath = f"{path}.params[{j}]"
            if not isinstance(pdoc, dict) or "name" not in pdoc or "type" not in pdoc:
                raise ModelSchemaError("param needs 'name' and 'type'", ppath)
            pextra = set(pdoc) - {"name", "type", "direction", "deref"}
            if pextra:
                raise ModelSchemaError(f"unknown param keys {sorted(pextra)}", ppath)
            direction = pdoc.get("direction", "unknown")
            if direction not in DIRECTIONS:
                raise ModelSchemaError(f"bad direction {direction!r}", f"{ppath}.direction")
            deref = None
            if "deref" in pdoc and pdoc["deref"] is not None:
                deref = _deref_from_yaml(pdoc["deref"], f"{ppath}.deref")
            base = str(pdoc["type"]).replace("const ", "").replace("*", "").strip()
            params.append(
                ParamDecl(
                    name=pdoc["name"],
                    c_type=pdoc["type"],
                    direction=direction,
                    deref=deref,
                    is_handle=base in handles,
                )
            )
        attrs = frozenset(fdoc.get("attrs") or [])
        functions.append(FunctionDecl(fdoc["name"], fdoc["return"], tuple(params), attrs))

    model = ApiModel(
        api_name=str(doc["api_name"]),
        version=str(doc["version"]),
        functions=tuple(functions),
        struct_defs=structs,
        enums=enums,
        handles=handles,
        profiling_hook=doc.get("profiling_hook"),
    )
    try:
        _validate_model(model)
    except ModelError as e:
        raise ModelSchemaError(str(e)) from None
    return model


# ---------------------------------------------------------------------------
# meta-parameters


def load_meta_params_yaml(document: str) -> MetaParams:
    doc = yaml.safe_load(document)
    if doc is None:
        return MetaParams()
    if not isinstance(doc, dict):
        raise ModelSchemaError("meta document must be a mapping", "$")
    extra = set(doc) - {"functions", "profiling_hook"}
    if extra:
        raise ModelSchemaError(f"unknown meta keys {sorted(extra)}", "$")
    functions = {}
    for fname, body in (doc.get("functions") or {}).items():
        path = f"functions.{fname}"
        body = body or {}
        fextra = set(body) - {"attrs", "params"}
        if fextra:
            raise ModelSchemaError(f"unknown meta function keys {sorted(fextra)}", path)
        params = {}
        for pname, pbody in (body.get("params") or {}).items():
            ppath = f"{path}.params.{pname}"
            pbody = pbody or {}
            pextra = set(pbody) - {"direction", "deref"}
            if pextra:
                raise ModelSchemaError(f"unknown meta param keys {sorted(pextra)}", ppath)
            direction = pbody.get("direction")
            if direction is not None and direction not in DIRECTIONS:
                raise ModelSchemaError(f"bad direction {direction!r}", ppath)
            deref = None
            if pbody.get("deref") is not None:
                deref = _deref_from_yaml(pbody["deref"], f"{ppath}.deref")
            params[pname] = ParamMeta(direction=direction, deref=deref)
        functions[fname] = FunctionMeta(attrs=frozenset(body.get("attrs") or []), params=params)
    return MetaParams(functions=functions, profiling_hook=doc.get("profiling_hook"))


def apply_meta_params(model: ApiModel, meta: MetaParams) -> ApiModel:
    """Overlay expert metadata onto a model; idempotent for a fixed meta."""
    by_name = {fn.name: fn for fn in model.functions}
    for fname in meta.functions:
        if fname not in by_name:
            raise MetaParamError(f"meta references unknown function {fname!r}")
    if meta.profiling_hook is not None:
        if meta.profiling_hook not in by_name:
            raise MetaParamError(f"profiling hook {meta.profiling_hook!r} is not a function")
        if model.profiling_hook not in (None, meta.profiling_hook):
            raise MetaParamError(
                f"conflicting profiling hook: {model.profiling_hook!r} vs {meta.profiling_hook!r}"
            )

    new_functions = []
    for fn in model.functions:
        fmeta = meta.functions.get(fn.name)
        if fmeta is None:
            new_functions.append(fn)
            continue
        for pname in fmeta.params:
            if not any(p.name == pname for p in fn.params):
                raise MetaParamError(f"meta references unknown parameter {fn.name}.{pname}")
        new_params = []
        for p in fn.params:
            pm = fmeta.params.get(p.name)
            if pm is None:
                new_params.append(p)
                continue
            direction = p.direction
            if pm.direction is not None:
                if p.direction not in ("unknown", pm.direction):
                    raise MetaParamError(
                        f"conflicting direction overlay on {fn.name}.{p.name}: "
                        f"{p.direction!r} vs {pm.direction!r}"
                    )
                direction = pm.direction
            deref = p.deref
            if pm.deref is not None:
                if p.deref is not None and p.deref != pm.deref:
                    raise MetaParamError(f"conflicting deref overlay on {fn.name}.{p.name}")
                deref = pm.deref
            new_params.append(replace(p, direction=direction, deref=deref))
        new_functions.append(
            replace(fn, params=tuple(new_params), attrs=fn.attrs | fmeta.attrs)
        )
    out = replace(
        model,
        functions=tuple(new_functions),
        profiling_hook=meta.profiling_hook or model.profiling_hook,
    )
    _validate_model(out)
    return out


# ---------------------------------------------------------------------------
# fingerprint


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def model_fingerprint(model: ApiModel) -> str:
    """64-bit FNV-1a over the canonical YAML form, as 16 hex digits."""
    return f"{fnv1a64(dump_api_model_yaml(model).encode()):016x}"
