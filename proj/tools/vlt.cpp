#include <iostream>

int main() {
  std::cout << "vlt cli placeholder\n";
  return 0;
}
