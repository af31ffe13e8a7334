# germlab Core Package
