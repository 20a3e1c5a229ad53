int parse_digit(char ch);
