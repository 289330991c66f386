"""S-expression reader shared by the netlist and rule parsers.

Atoms are decimal integers (returned as ``int``) and symbols (returned as
``str``); lists are returned as Python lists. ``;`` starts a comment that runs
to the end of the line.
"""

from functools import lru_cache

import pyparsing as pp

from .errors import NetlistSyntaxError

SExpr = int | str | list["SExpr"]


@lru_cache(maxsize=1)
def _grammar() -> pp.ParserElement:
    expr = pp.Forward()
    integer = pp.Regex(r"\d+(?=[\s();]|$)").set_parse_action(lambda t: int(t[0]))
    symbol = pp.Regex(r"[^\s();]+")
    lpar, rpar = map(pp.Suppress, "()")
    sexp_list = pp.Group(lpar + pp.ZeroOrMore(expr) + rpar)
    expr <<= integer | symbol | sexp_list
    forms = pp.ZeroOrMore(expr)
    forms.ignore(pp.Regex(r";[^\n]*"))
    return forms


def read_all(text: str) -> list[SExpr]:
    """Reads every top-level s-expression in ``text``.

    Raises:
        NetlistSyntaxError: with the line and column of the first offending
            character.
    """
    try:
        result = _grammar().parse_string(text, parse_all=True)
    except pp.ParseException as exc:
        raise NetlistSyntaxError(exc.msg, exc.lineno, exc.col) from exc
    return result.as_list()


def read_one(text: str) -> SExpr:
    forms = read_all(text)
    if len(forms) != 1:
        raise NetlistSyntaxError(f"expected one form, found {len(forms)}", 1, 1)
    return forms[0]


def write(expr: SExpr) -> str:
    if isinstance(expr, list):
        return "(" + " ".join(write(e) for e in expr) + ")"
    return str(expr)
