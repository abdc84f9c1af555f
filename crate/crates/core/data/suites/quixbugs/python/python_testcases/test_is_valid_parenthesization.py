import pytest

from python_programs.is_valid_parenthesization import is_valid_parenthesization


@pytest.mark.parametrize("parens,expected", [
    ("((()()))()", True),
    (")()(", False),
    ("((", False),
    ("", True),
    ("()()(())", True),
])
def test_main(parens, expected):
    assert is_valid_parenthesization(parens) == expected
