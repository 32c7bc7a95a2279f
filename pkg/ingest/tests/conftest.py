"""Shared fixtures: a 20-program corpus with correct/broken pairs.

Token streams are synthesized by chunking the source into identifier,
number, whitespace, and single-character runs, so concatenation to the
source is exact by construction; log-probabilities are drawn from a seeded
generator so every corpus build is byte-identical.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass

import pytest

from ingest.raw import RawSample

_CHUNK = re.compile(r"[A-Za-z_]\w*|\d+|\s+|.", re.DOTALL)


def chunk_tokens(source: str, seed: int) -> tuple[tuple[str, float], ...]:
    """Deterministic (text, logprob) stream that concatenates to source."""
    rnd = random.Random(seed)
    return tuple((piece, -rnd.uniform(0.05, 2.0)) for piece in _CHUNK.findall(source))


def make_sample(
    task_id: str,
    source: str,
    tests: tuple[str, ...],
    *,
    seed: int = 0,
    is_reference: bool = False,
) -> RawSample:
    return RawSample(
        task_id=task_id,
        source_text=source,
        tokens=chunk_tokens(source, seed),
        tests=tests,
        is_reference=is_reference,
    )


@dataclass(frozen=True)
class CorpusProgram:
    name: str
    source: str
    broken: str
    tests: tuple[str, ...]


CORPUS: tuple[CorpusProgram, ...] = (
    CorpusProgram(
        "add",
        "def add(a, b):\n    return a + b\n",
        "def add(a, b):\n    return a - b\n",
        ("assert add(2, 3) == 5", "assert add(-1, 1) == 0"),
    ),
    CorpusProgram(
        "fib",
        "def fib(n):\n    if n < 2:\n        return n\n    return fib(n - 1) + fib(n - 2)\n",
        "def fib(n):\n    if n < 2:\n        return 1\n    return fib(n - 1) + fib(n - 2)\n",
        ("assert fib(0) == 0", "assert fib(7) == 13"),
    ),
    CorpusProgram(
        "counter",
        "class Counter:\n    def __init__(self):\n        self.value = 0\n\n    def bump(self):\n        self.value += 1\n        return self.value\n",
        "class Counter:\n    def __init__(self):\n        self.value = 0\n\n    def bump(self):\n        self.value += 2\n        return self.value\n",
        ("c = Counter()\nassert c.bump() == 1\nassert c.bump() == 2",),
    ),
    CorpusProgram(
        "reverse",
        "def reverse(s):\n    return s[::-1]\n",
        "def reverse(s):\n    return s\n",
        ("assert reverse('abc') == 'cba'",),
    ),
    CorpusProgram(
        "squares",
        "def squares(xs):\n    return [x * x for x in xs]\n",
        "def squares(xs):\n    return [x * x * x for x in xs]\n",
        ("assert squares([1, 2, 3]) == [1, 4, 9]",),
    ),
    CorpusProgram(
        "is_prime",
        "def is_prime(n):\n    if n < 2:\n        return False\n    for d in range(2, int(n ** 0.5) + 1):\n        if n % d == 0:\n            return False\n    return True\n",
        "def is_prime(n):\n    if n < 2:\n        return False\n    for d in range(2, int(n ** 0.5)):\n        if n % d == 0:\n            return False\n    return True\n",
        ("assert is_prime(7)", "assert not is_prime(9)"),
    ),
    CorpusProgram(
        "twice",
        "def twice(f):\n    def wrapped(x):\n        return f(f(x))\n    return wrapped\n\n@twice\ndef inc(x):\n    return x + 1\n",
        "def twice(f):\n    def wrapped(x):\n        return f(x)\n    return wrapped\n\n@twice\ndef inc(x):\n    return x + 1\n",
        ("assert inc(0) == 2",),
    ),
    CorpusProgram(
        "safe_div",
        "def safe_div(a, b):\n    try:\n        return a / b\n    except ZeroDivisionError:\n        return None\n",
        "def safe_div(a, b):\n    return a / b\n",
        ("assert safe_div(6, 3) == 2", "assert safe_div(1, 0) is None"),
    ),
    CorpusProgram(
        "roundtrip",
        "def roundtrip(text):\n    with open('data.txt', 'w') as fh:\n        fh.write(text)\n    with open('data.txt', 'r') as fh:\n        return fh.read()\n",
        "def roundtrip(text):\n    with open('data.txt', 'w') as fh:\n        fh.write(text)\n    with open('other.txt', 'r') as fh:\n        return fh.read()\n",
        ("assert roundtrip('hello') == 'hello'",),
    ),
    CorpusProgram(
        "largest",
        "def largest(a, b, c):\n    return max(a, b, c)\n",
        "def largest(a, b, c):\n    return min(a, b, c)\n",
        ("assert largest(1, 5, 3) == 5",),
    ),
    CorpusProgram(
        "vowels",
        "def vowels(s):\n    return sum(1 for ch in s if ch in 'aeiou')\n",
        "def vowels(s):\n    return sum(1 for ch in s if ch not in 'aeiou')\n",
        ("assert vowels('aeiou') == 5", "assert vowels('banana') == 3"),
    ),
    CorpusProgram(
        "merge",
        "def merge(a, b):\n    return {**a, **b}\n",
        "def merge(a, b):\n    return {**b, **a}\n",
        ("assert merge({'k': 1}, {'k': 2}) == {'k': 2}",),
    ),
    CorpusProgram(
        "fizzbuzz",
        "def fizzbuzz(n):\n    if n % 15 == 0:\n        return 'fizzbuzz'\n    if n % 3 == 0:\n        return 'fizz'\n    if n % 5 == 0:\n        return 'buzz'\n    return str(n)\n",
        "def fizzbuzz(n):\n    if n % 15 == 0:\n        return 'fizzbuzz'\n    if n % 5 == 0:\n        return 'fizz'\n    if n % 3 == 0:\n        return 'buzz'\n    return str(n)\n",
        ("assert fizzbuzz(9) == 'fizz'", "assert fizzbuzz(10) == 'buzz'"),
    ),
    CorpusProgram(
        "greet",
        'def greet(name):\n    """Format a greeting."""\n    return f"hello {name}"\n',
        'def greet(name):\n    """Format a greeting."""\n    return f"hello{name}"\n',
        ("assert greet('ada') == 'hello ada'",),
    ),
    CorpusProgram(
        "make_adder",
        "def make_adder(k):\n    def adder(x):\n        return x + k\n    return adder\n",
        "def make_adder(k):\n    def adder(x):\n        return x * k\n    return adder\n",
        ("assert make_adder(3)(4) == 7",),
    ),
    CorpusProgram(
        "flatten",
        "def flatten(rows):\n    return [x for row in rows for x in row]\n",
        "def flatten(rows):\n    return [row for row in rows]\n",
        ("assert flatten([[1], [2, 3]]) == [1, 2, 3]",),
    ),
    CorpusProgram(
        "clamp",
        "def clamp(x, lo=0, hi=1):\n    return max(lo, min(hi, x))\n",
        "def clamp(x, lo=0, hi=1):\n    return max(hi, min(lo, x))\n",
        ("assert clamp(5) == 1", "assert clamp(-2) == 0", "assert clamp(0.5) == 0.5"),
    ),
    CorpusProgram(
        "unique_sorted",
        "def unique_sorted(xs):\n    return sorted(set(xs))\n",
        "def unique_sorted(xs):\n    return list(set(xs))[::-1]\n",
        ("assert unique_sorted([3, 1, 3, 2]) == [1, 2, 3]",),
    ),
    CorpusProgram(
        "power",
        "# integer power, no shortcuts\ndef power(a, b):\n    # rely on the builtin operator\n    return a ** b\n",
        "# integer power, no shortcuts\ndef power(a, b):\n    # rely on the builtin operator\n    return a * b\n",
        ("assert power(2, 5) == 32",),
    ),
    CorpusProgram(
        "digit_sum",
        "def digit_sum(n):\n    total = 0\n    while n:\n        total += n % 10\n        n //= 10\n    return total\n",
        "def digit_sum(n):\n    total = 1\n    while n:\n        total *= n % 10\n        n //= 10\n    return total\n",
        ("assert digit_sum(1234) == 10",),
    ),
)


@pytest.fixture(scope="session")
def corpus() -> tuple[CorpusProgram, ...]:
    assert len(CORPUS) == 20
    return CORPUS


@pytest.fixture(scope="session")
def corpus_samples(corpus) -> list[RawSample]:
    return [
        make_sample(p.name, p.source, p.tests, seed=1000 + i) for i, p in enumerate(corpus)
    ]
