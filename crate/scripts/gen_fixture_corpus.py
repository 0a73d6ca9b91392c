#!/usr/bin/env python3
"""Regenerate the fixture corpus, POS lexicon and concept registry.

Output lands in crates/core/assets/. The generator is seeded, so rerunning it
reproduces the committed files byte for byte.

    python3 scripts/gen_fixture_corpus.py
"""
import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
ASSETS = ROOT / "crates" / "core" / "assets"
rng = random.Random(20240917)

LEXICON = {
    "ADJ": "big small red blue green old new young happy sad quick slow bright dark large tiny warm cold "
    "beautiful strange quiet loud famous ancient modern simple complex early heavy strong weak rich poor "
    "deep gentle narrow wide clever brave calm fresh golden silent wooden".split(),
    "ADP": "in on at by with from of for about under over through between into across near behind "
    "beside during without within".split(),
    "ADV": "quickly slowly often never always very quite rather soon already really almost nearly "
    "carefully suddenly recently usually here there today yesterday".split(),
    "AUX": "is are was were be been has have had does did will would can could should may might must".split(),
    "CCONJ": "and or but nor yet".split(),
    "DET": "the a an this these those every each some any another".split(),
    "NOUN": "cat dog house river city tree book car music teacher student garden window table water "
    "computer idea history market village mountain ocean road family friend problem system bridge "
    "letter storm forest island kitchen painting song engine harbor lantern".split(),
    "NUM": "one two three four five six seven eight nine ten twenty hundred thousand".split(),
    "PART": "not to".split(),
    "PRON": "I you he she it we they me him her us them myself someone nothing everything".split(),
    "PROPN": "Alice Bob Paris London Tokyo Berlin Maria John Amazon Nile Everest Einstein Kenya Lagos "
    "Delhi Oslo Lima Cairo Sofia Victor".split(),
    "SCONJ": "because although while if when unless since whereas though whether".split(),
    "VERB": "runs walked saw built wrote read ate found made played studied carried opened painted "
    "watched visited cleaned repaired sang climbed".split(),
    "INTJ": "oh wow hey ouch hmm alas hooray bravo oops yikes ugh phew".split(),
}
VERB_BASE = "run walk see build write read eat find make play study carry open paint watch visit clean repair sing climb".split()

POS_CONCEPTS = [
    ("adjective", "ADJ", "Adjectives such as big, ancient, quiet."),
    ("adposition", "ADP", "Prepositions such as in, under, between."),
    ("adverb", "ADV", "Adverbs such as quickly, never, today."),
    ("auxiliary", "AUX", "Auxiliary verbs such as is, have, could."),
    ("coordinating conjunction", "CCONJ", "Coordinating conjunctions: and, or, but, nor, yet."),
    ("determiner", "DET", "Determiners such as the, a, every."),
    ("noun", "NOUN", "Common nouns such as river, engine, garden."),
    ("numeral", None, "Numerals, either spelled out or written with digits."),
    ("particle", "PART", "Particles: negation 'not' and infinitival 'to'."),
    ("pronoun", "PRON", "Personal and indefinite pronouns."),
    ("proper noun", "PROPN", "Names of people and places."),
    ("punctuation", None, "Sentence punctuation marks."),
    ("subordinating conjunction", "SCONJ", "Subordinating conjunctions such as because, unless."),
    ("symbol", None, "Symbols such as $, %, &, +, =."),
    ("verb", None, "Main verbs in base or past form."),
    ("other", "INTJ", "Interjections and other unclassified words."),
]


def alternation(words):
    return "|".join(sorted(words, key=lambda w: (-len(w), w)))


def pos_rule(tag):
    flags = "" if tag in ("PRON", "PROPN") else "(?i)"
    return flags + r"\b(?:" + alternation(LEXICON[tag]) + r")\b"


def pos_registry():
    concepts = []
    for name, tag, desc in POS_CONCEPTS:
        if name == "numeral":
            rule = r"(?i)\b(?:\d+(?:[.,]\d+)*|" + alternation(LEXICON["NUM"]) + r")\b"
        elif name == "punctuation":
            rule = r"[.,;:!?()\"]"
        elif name == "symbol":
            rule = r"[$%&+=<>#@*/€°©]"
        elif name == "verb":
            rule = r"(?i)\b(?:" + alternation(LEXICON["VERB"] + VERB_BASE) + r")\b"
        else:
            rule = pos_rule(tag)
        concepts.append({"name": name, "category": "pos", "rule": rule, "description": desc})
    return concepts


TEXT_CONCEPTS = [
    ("leading_capital", r"\b[A-Z]", "Word starts with an uppercase letter."),
    ("leading_loweralpha", r"\b[a-z]", "Word starts with a lowercase letter."),
    ("all_digits", r"\b\d+\b", "A run consisting only of digits."),
    ("is_not_ascii", r"[^\x00-\x7F]+", "Characters outside the ASCII range."),
    ("contains_all_whitespace", r"[\n\t\r]+", "Pure whitespace such as newlines and tabs."),
    ("all_capitals", r"\b[A-Z]{2,}\b", "Words written entirely in capitals."),
    ("is_not_alphanumeric", r"[^A-Za-z0-9\s]+", "Runs of non-alphanumeric, non-space characters."),
    ("contains_whitespace", r"\s", "Any whitespace character."),
    ("contains_capital", r"[A-Z]", "Any uppercase letter."),
    ("contains_digit", r"\d", "Any decimal digit."),
]

CODE_CONCEPTS = [
    ("is_function_def", r"\b(?:def|function)\s+[A-Za-z_]\w*", "Function definition keyword and name."),
    ("is_function_call",
     r"\.[A-Za-z_]\w*\s*\(|\b(?:def|function|class|if|elif|for|while|switch|catch|return)\b\s*[A-Za-z_]*\s*\(|\b([A-Za-z_]\w*)\s*\(",
     "Name of a called free function."),
    ("is_assignment", r"\b([A-Za-z_][\w.]*)\s*(?:\+|-|\*|/)?=[^=]", "Target of an assignment."),
    ("is_class_def", r"\bclass\s+[A-Za-z_]\w*", "Class definition keyword and name."),
    ("is_import", r"(?m)^[ \t]*(?:import|from)\b[^\n]*", "Import statements."),
    ("is_comment", r"#[^\n]*|//[^\n]*", "Line comments."),
    ("is_string_literal", r"\"[^\"\n]*\"|'[^'\n]*'", "Quoted string literals."),
    ("is_control_flow", r"\b(?:if|elif|else|for|while|return|break|continue|switch|case|try|except|catch|finally|yield)\b",
     "Control-flow keywords."),
    ("is_loop", r"\b(?:for|while|do)\b", "Loop keywords."),
    ("is_conditional", r"\b(?:if|elif|else|switch|case)\b", "Conditional keywords."),
    ("is_exception_handling", r"\b(?:try|except|catch|finally|raise|throw)\b", "Exception handling keywords."),
    ("is_array_literal", r"(?:^|[=(,:\s])(\[[^\[\]\n]*\])", "List or array literals."),
    ("is_method_call", r"\.([A-Za-z_]\w*)\s*\(", "Name of a called method."),
    ("is_lambda", r"\blambda\b[^:\n]*:|=>", "Anonymous function syntax."),
    ("is_operator", r"\*\*|==|!=|<=|>=|&&|\|\||[+\-*/%<>]", "Arithmetic and comparison operators."),
    ("is_constant", r"\b[A-Z][A-Z0-9_]{2,}\b", "UPPER_CASE constants."),
    ("is_boolean", r"\b(?:True|False|true|false)\b", "Boolean literals."),
    ("is_null", r"\b(?:None|null|undefined|nil)\b", "Null literals."),
    ("is_decorator", r"(?m)^[ \t]*(@[A-Za-z_][\w.]*)", "Decorators."),
    ("is_async", r"\b(?:async|await)\b", "Async keywords."),
]

MATH_ENV = r"(?:equation|align|gather|eqnarray)\*?"
LATEX_CONCEPTS = [
    ("is_superscript", r"\^(?:\{[^{}]*\}|[A-Za-z0-9])", "Superscripts."),
    ("is_subscript", r"_(?:\{[^{}]*\}|[A-Za-z0-9])", "Subscripts."),
    ("is_inline_math", r"\$\$[^$]*\$\$|(\$[^$\n]+\$|\\\([^\n]*?\\\))", "Inline math."),
    ("is_display_math",
     r"\$\$[^$]+\$\$|\\\[[\s\S]*?\\\]|\\begin\{" + MATH_ENV + r"\}[\s\S]*?\\end\{" + MATH_ENV + r"\}",
     "Display math blocks."),
    ("is_math",
     r"\$\$[^$]+\$\$|\$[^$\n]+\$|\\\[[\s\S]*?\\\]|\\\([^\n]*?\\\)|\\begin\{" + MATH_ENV + r"\}[\s\S]*?\\end\{" + MATH_ENV + r"\}",
     "Any math content."),
    ("is_denominator", r"\\frac\{[^{}]*\}\{([^{}]*)\}", "Denominator of a fraction."),
    ("is_numerator", r"\\frac\{([^{}]*)\}\{[^{}]*\}", "Numerator of a fraction."),
    ("is_frac", r"\\frac\{[^{}]*\}\{[^{}]*\}", "Complete fraction."),
    ("is_author", r"\\author\{([^}]*)\}", "Author names."),
    ("is_title", r"\\title\{([^}]*)\}", "Document title."),
    ("is_reference", r"\\(?:cite|citep|citet|ref|eqref)\{[^}]*\}", "Citations and cross references."),
    ("is_abstract", r"\\begin\{abstract\}([\s\S]*?)\\end\{abstract\}", "Abstract body."),
]

# three positive / three negative strings per concept
EXAMPLES = {
    "adjective": (["a big dog", "the ancient wall", "it was quiet"], ["the dog", "he ran", "42"]),
    "adposition": (["in the house", "under a tree", "walk between them"], ["the house", "he ran", "big"]),
    "adverb": (["ran quickly", "never again", "see you today"], ["the dog", "a house", "blue"]),
    "auxiliary": (["she is here", "they have gone", "we could try"], ["the dog", "a tree", "blue sky"]),
    "coordinating conjunction": (["cats and dogs", "tea or coffee", "small but brave"], ["cats", "the dog", "sandy"]),
    "determiner": (["the dog", "a tree", "every house"], ["dogs run", "quickly", "blue"]),
    "noun": (["a cat", "the river", "my garden"], ["quickly", "the", "blue"]),
    "numeral": (["two cats", "in 1999", "costs 3.50"], ["cats", "the house", "blue"]),
    "particle": (["do not go", "want to sing", "NOT now"], ["the dog", "a house", "knot"]),
    "pronoun": (["I saw", "they left", "call me"], ["the dog", "quickly", "tree"]),
    "proper noun": (["Alice smiled", "in Paris", "visit Tokyo"], ["alice", "the city", "blue"]),
    "punctuation": (["Stop.", "yes, no", "why?"], ["stop", "yes no", "why"]),
    "subordinating conjunction": (["because it rained", "if you can", "although late"], ["the dog", "rain", "late"]),
    "symbol": (["$5", "50%", "a + b"], ["five", "fifty", "a b"]),
    "verb": (["he walked", "they run", "she wrote it"], ["the dog", "blue", "a house"]),
    "other": (["oh no", "wow, nice", "ouch that hurt"], ["the dog", "no", "nice"]),
    "leading_capital": (["Hello world", "the Big one", "A"], ["hello", "world 123", "!!!"]),
    "leading_loweralpha": (["hello", "Big apple", "x"], ["Hello", "123", "!!"]),
    "all_digits": (["abc 123", "2024", "call 911 now"], ["abc", "x1y", "one two"]),
    "is_not_ascii": (["café", "東京", "naïve"], ["cafe", "tokyo", "naive"]),
    "contains_all_whitespace": (["a\nb", "x\ty", "end\n\n"], ["a b", "xy", "end"]),
    "all_capitals": (["NASA rocks", "the HTTP spec", "OK"], ["Nasa", "http", "A b"]),
    "is_not_alphanumeric": (["a, b", "x!", "(y)"], ["ab", "x y", "123"]),
    "contains_whitespace": (["a b", "x\ny", " "], ["ab", "xy", "1"]),
    "contains_capital": (["Abc", "xYz", "Q"], ["abc", "xyz", "123"]),
    "contains_digit": (["a1", "2024", "x 9"], ["abc", "xyz", "..."]),
    "is_function_def": (["def foo(x):", "function bar() {", "def main():"], ["foo(x)", "x = 1", "class A:"]),
    "is_function_call": (["foo(x)", "y = bar(1)", "print_all(z)"], ["x = 1", "obj.run(1)", "a + b"]),
    "is_assignment": (["x = 1", "total += 5", "self.a = b"], ["x == 1", "foo(x)", "a + b"]),
    "is_class_def": (["class Foo:", "class Bar(Base):", "class A {"], ["def foo():", "x = 1", "klass = 2"]),
    "is_import": (["import os", "from x import y", "  import sys"], ["x = 1", "def f():", "important = 2"]),
    "is_comment": (["x = 1  # set x", "// note", "# header"], ["x = 1", "a / b", "foo(x)"]),
    "is_string_literal": (["s = \"hi\"", "print('ok')", "\"\""], ["s = hi", "print(ok)", "x = 1"]),
    "is_control_flow": (["if x:", "return y", "while True:"], ["x = 1", "foo(x)", "iffy = 2"]),
    "is_loop": (["for i in xs:", "while x:", "do {"], ["if x:", "return y", "fork = 1"]),
    "is_conditional": (["if x:", "else:", "switch (x) {"], ["for i in x:", "return y", "iffy = 1"]),
    "is_exception_handling": (["try:", "except ValueError:", "throw err;"], ["if x:", "return y", "trying = 1"]),
    "is_array_literal": (["x = [1, 2]", "f([a, b])", "ys = []"], ["x = 1", "foo(x)", "a(b)"]),
    "is_method_call": (["obj.run(1)", "xs.append(y)", "s.strip()"], ["run(1)", "x = 1", "obj.field"]),
    "is_lambda": (["f = lambda x: x", "xs.map(x => x)", "lambda: 0"], ["def f(x):", "x = 1", "lambdas"]),
    "is_operator": (["a + b", "x == y", "n % 2"], ["ab", "x y", "foo"]),
    "is_constant": (["MAX_SIZE = 10", "x = PI2", "DEFAULT_NAME"], ["max_size", "Pi", "Ab"]),
    "is_boolean": (["x = True", "flag = false", "return False"], ["x = 1", "truth", "falsey"]),
    "is_null": (["x = None", "return null", "y === undefined"], ["x = 0", "nullable", "none"]),
    "is_decorator": (["@property", "  @app.route", "@staticmethod"], ["x = 1", "a@b", "def f():"]),
    "is_async": (["async def f():", "await g()", "async function h() {"], ["def f():", "g()", "asynchrony"]),
    "is_superscript": (["x^2", "e^{i\\pi}", "a^n"], ["x_2", "x2", "e"]),
    "is_subscript": (["x_1", "a_{ij}", "y_n"], ["x^1", "x1", "y"]),
    "is_inline_math": (["let $x$ be", "where $a+b$ holds", "\\(y\\) is"], ["$$x$$", "let x be", "a+b"]),
    "is_display_math": (["$$x=1$$", "\\[a+b\\]", "\\begin{equation}y\\end{equation}"], ["$x$", "x=1", "\\(y\\)"]),
    "is_math": (["$x$", "$$y$$", "\\[z\\]"], ["x", "y", "z"]),
    "is_denominator": (["\\frac{1}{2}", "\\frac{a}{b+c}", "$\\frac{x}{y}$"], ["1/2", "frac{1}{2}", "\\frac"]),
    "is_numerator": (["\\frac{1}{2}", "\\frac{a+b}{c}", "$\\frac{x}{y}$"], ["1/2", "frac{1}{2}", "\\frac"]),
    "is_frac": (["\\frac{1}{2}", "\\frac{a}{b}", "$\\frac{x}{y}$"], ["1/2", "frac{1}{2}", "\\frac"]),
    "is_author": (["\\author{Ada Lovelace}", "\\author{A. B.}", "x \\author{Z}"], ["\\title{X}", "author", "Ada"]),
    "is_title": (["\\title{On Graphs}", "\\title{A}", "x \\title{Q}"], ["\\author{X}", "title", "On Graphs"]),
    "is_reference": (["see \\cite{knuth}", "Eq. \\eqref{e1}", "\\ref{fig}"], ["cite", "see knuth", "\\label{a}"]),
    "is_abstract": (["\\begin{abstract}We study x.\\end{abstract}", "\\begin{abstract}A\\end{abstract}",
                     "x \\begin{abstract}b\\end{abstract}"], ["abstract", "\\begin{proof}x\\end{proof}", "We study x."]),
}


def registry(concepts):
    out = []
    for entry in concepts:
        name = entry["name"]
        pos, neg = EXAMPLES[name]
        entry = dict(entry)
        entry["examples"] = {"positive": pos, "negative": neg}
        out.append(entry)
    return out


def simple_concepts(triples, category):
    return [{"name": n, "category": category, "rule": r, "description": d} for n, r, d in triples]


# ---------------------------------------------------------------- corpus text

NON_ASCII = ["café", "naïve", "Zürich", "São Paulo", "Москва", "東京", "résumé", "crème brûlée", "Ångström",
             "façade", "jalapeño", "München", "Kraków", "Þingvellir", "€", "°C"]
CAPS = ["NASA", "UNESCO", "HTTP", "JSON", "NATO", "FIFA", "GPU", "USB", "DNA", "CEO", "URL", "API"]
PLURAL = {n: (n + "es" if n.endswith(("s", "sh", "ch")) else n + "s") for n in LEXICON["NOUN"]}
PLURAL["family"] = "families"
PLURAL["city"] = "cities"


def w(tag):
    return rng.choice(LEXICON[tag])


def cap(s):
    return s[:1].upper() + s[1:]


def number():
    r = rng.random()
    if r < 0.4:
        return str(rng.randint(2, 99))
    if r < 0.7:
        return str(rng.randint(1000, 2030))
    if r < 0.85:
        return f"{rng.randint(1, 999)}.{rng.randint(0, 99):02d}"
    return w("NUM")


def sentence():
    t = rng.randrange(12)
    if t == 0:
        return f"{cap(w('DET'))} {w('ADJ')} {w('NOUN')} {w('VERB')} {w('ADP')} the {w('NOUN')}."
    if t == 1:
        return f"{w('PROPN')} {w('AUX')} {w('ADV')} {w('ADJ')} {w('SCONJ')} {w('PRON')} {w('VERB')} {number()} {PLURAL[w('NOUN')]}."
    if t == 2:
        return f"{cap(w('INTJ'))}, {w('PRON')} did not want to {rng.choice(VERB_BASE)} the {w('NOUN')}!"
    if t == 3:
        return f"In {number()}, {w('PROPN')} and {w('PROPN')} {w('VERB')} a {w('ADJ')} {w('NOUN')} near {w('PROPN')}."
    if t == 4:
        return f"The {w('NOUN')} costs ${number()} or {rng.randint(2, 90)}% more than the {w('NOUN')} & the {w('NOUN')}."
    if t == 5:
        return f"Why {w('AUX')} {w('PRON')} {w('ADV')} {rng.choice(VERB_BASE)} {w('ADP')} {w('DET')} {w('NOUN')}?"
    if t == 6:
        return f"{rng.choice(CAPS)} and {rng.choice(CAPS)} met in {rng.choice(NON_ASCII)} ({number()} {PLURAL[w('NOUN')]})."
    if t == 7:
        return f"{cap(w('PRON'))} {w('AUX')} {w('ADV')} {rng.choice(VERB_BASE)} {w('CCONJ')} {rng.choice(VERB_BASE)}; {w('PRON')} {w('VERB')} {w('ADP')} {w('PROPN')}."
    if t == 8:
        return f"{w('SCONJ').capitalize()} the {w('NOUN')} {w('AUX')} {w('ADJ')}, {w('PRON')} {w('VERB')} {w('NUM')} {PLURAL[w('NOUN')]} {w('ADV')}."
    if t == 9:
        return f"\"{cap(w('INTJ'))}!\" said {w('PROPN')}: \"{w('DET')} {w('NOUN')} is {w('ADJ')} = {rng.randint(1, 9)} + {rng.randint(1, 9)}.\""
    if t == 10:
        return f"{w('PROPN')} visited {rng.choice(NON_ASCII)} with {w('PROPN')} # {rng.randint(1, 40)} @ {rng.randint(1, 12)} o'clock."
    return f"THE {w('NOUN').upper()} of {w('PROPN')} {w('AUX')} {w('ADJ')} {w('CCONJ')} {w('ADJ')} at {number()}°C."


def prose_doc():
    paras = []
    for _ in range(rng.randint(1, 4)):
        paras.append(" ".join(sentence() for _ in range(rng.randint(2, 6))))
    sep = rng.choice(["\n\n", "\n", "\n\t"])
    return sep.join(paras)


IDENTS = "data items value count total result buffer index node config user record path name size score".split()
FUNCS = "load_data parse_item compute_total update_record fetch_user build_index normalize merge_nodes".split()
METHODS = "append strip split get items keys update push map filter join lower".split()
CLASSES = "Parser Node Cache Record Loader Matrix Queue Config".split()
CONSTS = "MAX_SIZE DEFAULT_NAME TIMEOUT_MS BUFFER_LEN API_KEY RETRY_COUNT".split()
MODULES = "os sys json math re time collections itertools typing pathlib".split()


def py_doc():
    lines = []
    for m in rng.sample(MODULES, rng.randint(1, 3)):
        lines.append(rng.choice([f"import {m}", f"from {m} import {rng.choice(IDENTS)}"]))
    lines.append(f"{rng.choice(CONSTS)} = {rng.randint(1, 500)}")
    lines.append("")
    for _ in range(rng.randint(1, 3)):
        kind = rng.randrange(4)
        if kind == 0:
            if rng.random() < 0.7:
                lines.append(rng.choice(["@staticmethod", "@property", "@functools.lru_cache", "@app.route"]))
            pre = "async " if rng.random() < 0.3 else ""
            f, a, b = rng.choice(FUNCS), rng.choice(IDENTS), rng.choice(IDENTS)
            lines.append(f"{pre}def {f}({a}, {b}=None):")
            lines.append(f"    # {w('ADJ')} helper for {w('NOUN')}")
            lines.append(f"    {b} = [] if {b} is None else {b}")
            lines.append(f"    for i in range(len({a})):")
            lines.append(f"        if {a}[i] > {rng.randint(0, 9)} and {a}[i] != {rng.randint(0, 9)}:")
            lines.append(f"            {b}.{rng.choice(METHODS)}({a}[i] * {rng.randint(2, 5)})")
            lines.append("        else:")
            lines.append("            continue")
            if pre:
                lines.append(f"    await {rng.choice(FUNCS)}({b})")
            lines.append(f"    return {b}")
        elif kind == 1:
            c = rng.choice(CLASSES)
            lines.append(f"class {c}({rng.choice(CLASSES)}):")
            lines.append(f"    \"\"\"{cap(w('ADJ'))} {w('NOUN')} wrapper.\"\"\"")
            lines.append("    def __init__(self, value):")
            lines.append(f"        self.value = value  # store {w('NOUN')}")
            lines.append(f"        self.items = [{rng.randint(0, 9)}, {rng.randint(0, 9)}, {rng.randint(0, 9)}]")
            lines.append(f"        self.flag = {rng.choice(['True', 'False', 'None'])}")
            lines.append("")
            lines.append("    def total(self):")
            lines.append(f"        key = lambda x: x ** {rng.randint(2, 3)} % {rng.randint(3, 9)}")
            lines.append("        return sum(map(key, self.items))")
        elif kind == 2:
            a = rng.choice(IDENTS)
            lines.append("try:")
            lines.append(f"    {a} = {rng.choice(FUNCS)}('{rng.choice(IDENTS)}.json')")
            lines.append(f"    {a}.{rng.choice(METHODS)}(\"{w('NOUN')}\")")
            lines.append("except ValueError as err:")
            lines.append(f"    raise RuntimeError(\"{w('ADJ')} {w('NOUN')}\") from err")
            lines.append("finally:")
            lines.append(f"    print({a})")
        else:
            a = rng.choice(IDENTS)
            lines.append(f"while {a} < {rng.choice(CONSTS)}:")
            lines.append(f"    {a} += {rng.randint(1, 9)}  # step")
            lines.append(f"    if {a} == {rng.randint(10, 99)} or {a} >= {rng.randint(10, 99)}:")
            lines.append("        break")
            lines.append(f"values = [{a}, {rng.randint(0, 99)}, '{w('NOUN')}']")
    return "\n".join(lines) + "\n"


def js_doc():
    lines = []
    lines.append(f"import {{ {rng.choice(FUNCS)} }} from './{rng.choice(IDENTS)}';")
    lines.append(f"const {rng.choice(CONSTS)} = {rng.randint(1, 1000)};")
    for _ in range(rng.randint(1, 3)):
        kind = rng.randrange(3)
        f, a = rng.choice(FUNCS), rng.choice(IDENTS)
        if kind == 0:
            pre = "async " if rng.random() < 0.3 else ""
            lines.append(f"{pre}function {f}({a}) {{")
            lines.append(f"  // {w('ADJ')} {w('NOUN')} handler")
            lines.append(f"  let out = [];")
            lines.append(f"  for (let i = 0; i < {a}.length; i++) {{")
            lines.append(f"    if ({a}[i] === null || {a}[i] === undefined) {{ continue; }}")
            lines.append(f"    out.{rng.choice(METHODS)}({a}[i] + {rng.randint(1, 9)});")
            lines.append("  }")
            if pre:
                lines.append(f"  await {rng.choice(FUNCS)}(out);")
            lines.append(f"  return out.filter(x => x > {rng.randint(0, 9)});")
            lines.append("}")
        elif kind == 1:
            lines.append(f"class {rng.choice(CLASSES)} {{")
            lines.append("  constructor(value) {")
            lines.append(f"    this.value = value || \"{w('NOUN')}\";")
            lines.append(f"    this.ready = {rng.choice(['true', 'false'])};")
            lines.append("  }")
            lines.append("}")
        else:
            lines.append("try {")
            lines.append(f"  const {a} = {f}([{rng.randint(0, 9)}, {rng.randint(0, 9)}]);")
            lines.append(f"  switch ({a}.kind) {{")
            lines.append(f"    case '{w('NOUN')}': console.log({a}); break;")
            lines.append("    default: break;")
            lines.append("  }")
            lines.append("} catch (err) {")
            lines.append(f"  throw new Error('{w('ADJ')} {w('NOUN')}');")
            lines.append("}")
    return "\n".join(lines) + "\n"


SYMS = "x y z a b n k t".split()
GREEK = r"\alpha \beta \gamma \lambda \sigma \theta".split()


def math_expr():
    v = rng.choice(SYMS)
    t = rng.randrange(6)
    if t == 0:
        return f"{v}^{rng.randint(2, 4)} + {rng.choice(SYMS)}_{rng.randint(0, 3)}"
    if t == 1:
        return rf"\frac{{{v} + {rng.randint(1, 9)}}}{{{rng.choice(SYMS)}_{{i}}}}"
    if t == 2:
        return rf"{rng.choice(GREEK)}_{{{v}}} = \sum_{{i=1}}^{{n}} {v}_i"
    if t == 3:
        return rf"\frac{{1}}{{{rng.randint(2, 9)}}} {v}^{{2}}"
    if t == 4:
        return rf"e^{{{rng.choice(GREEK)} {v}}} \leq {rng.randint(1, 9)}"
    return f"{v}_{{{rng.choice(SYMS)}{rng.choice(SYMS)}}} = {rng.randint(0, 9)}"


def latex_doc():
    parts = []
    if rng.random() < 0.6:
        parts.append(rf"\title{{On {cap(w('ADJ'))} {cap(PLURAL[w('NOUN')])} and {cap(w('NOUN'))} Bounds}}")
        parts.append(rf"\author{{{w('PROPN')} {rng.choice(['Smith', 'Okafor', 'Tanaka', 'Novak', 'Silva'])}}}")
    if rng.random() < 0.6:
        parts.append(r"\begin{abstract}" + f"We study {w('ADJ')} {PLURAL[w('NOUN')]} and show that ${math_expr()}$ holds." + r"\end{abstract}")
    for _ in range(rng.randint(1, 3)):
        r = rng.randrange(4)
        if r == 0:
            parts.append(f"Let ${math_expr()}$ and note that ${math_expr()}$ by \\cite{{{rng.choice(IDENTS)}{rng.randint(1990, 2023)}}}.")
        elif r == 1:
            parts.append("\\begin{equation}\n" + math_expr() + "\n\\end{equation}\nas shown in \\eqref{eq" + str(rng.randint(1, 9)) + "}.")
        elif r == 2:
            parts.append(f"Hence \\[ {math_expr()} \\] and also $$ {math_expr()} $$ follow.")
        else:
            parts.append(f"By Lemma~\\ref{{lem{rng.randint(1, 9)}}}, \\( {math_expr()} \\) is {w('ADJ')}.")
    return "\n".join(parts) + "\n"


def main():
    docs = []
    for i in range(1400):
        r = i % 7
        if r in (0, 1, 2):
            docs.append(prose_doc())
        elif r in (3, 4):
            docs.append(py_doc() if rng.random() < 0.6 else js_doc())
        else:
            docs.append(latex_doc())
    corpus = ASSETS / "corpus" / "fixture.jsonl"
    with corpus.open("w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps({"text": d}, ensure_ascii=False) + "\n")

    lexicon = {}
    for tag, words in LEXICON.items():
        for word in words:
            lexicon.setdefault(word, tag)
    for word in VERB_BASE:
        lexicon.setdefault(word, "VERB")
    (ASSETS / "concepts" / "pos_lexicon.json").write_text(
        json.dumps(dict(sorted(lexicon.items())), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")

    registries = {
        "pos": registry(pos_registry()),
        "text": registry(simple_concepts(TEXT_CONCEPTS, "text")),
        "code": registry(simple_concepts(CODE_CONCEPTS, "code")),
        "latex": registry(simple_concepts(LATEX_CONCEPTS, "latex")),
    }
    for cat, entries in registries.items():
        doc = {"category": cat, "version": 1, "concepts": entries}
        (ASSETS / "concepts" / f"{cat}.json").write_text(
            json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {len(docs)} documents, {sum(len(v) for v in registries.values())} concepts")


if __name__ == "__main__":
    main()
