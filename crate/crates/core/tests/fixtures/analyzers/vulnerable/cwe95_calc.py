def calculate(expression):
    # user supplied arithmetic
    return eval(expression)
