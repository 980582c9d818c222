line = input()
print(line.upper())
