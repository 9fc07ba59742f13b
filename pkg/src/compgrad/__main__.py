from compgrad.cli import main

main()
